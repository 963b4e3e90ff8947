//! The contact Hamiltonian vector field, trajectories and flow diagnostics.
//!
//! In contact coordinates the flow of `H(q, p, S, t)` reads
//!
//! ```text
//! dq/dt = dH/dp
//! dp/dt = -dH/dq - p dH/dS
//! dS/dt = p dH/dp - H
//! ```
//!
//! with `dt/dt = 1` on the extended space. The flow contracts the contact
//! volume with divergence `-(n + 1) dH/dS`.

use nalgebra::DMatrix;

use crate::error::{ContactError, Result};
use crate::model::{fd_step, ContactState, ExtendedState, HamiltonianModel, ModelKind, PhaseFunction};
use crate::ode::{self, AdaptiveOptions};

/// Default threshold below which `|H|` makes the invariant measure singular.
pub const MEASURE_EPSILON: f64 = 1e-12;

/// Components of the extended contact vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
    pub ds: f64,
    /// Always 1 for the extended field.
    pub dt: f64,
}

impl Tangent {
    pub fn packed(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dq.len() + 1);
        v.extend_from_slice(&self.dq);
        v.extend_from_slice(&self.dp);
        v.push(self.ds);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    FixedRk4 { step: f64 },
    AdaptiveRk45 { rel_tol: f64, abs_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    pub max_steps: usize,
    pub sample_interval: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self::adaptive(1e-9, 1e-12)
    }
}

impl IntegratorOptions {
    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self { method: Method::AdaptiveRk45 { rel_tol, abs_tol }, max_steps: 1_000_000, sample_interval: 0.1 }
    }

    pub fn fixed(step: f64) -> Self {
        Self { method: Method::FixedRk4 { step }, max_steps: 10_000_000, sample_interval: 0.1 }
    }

    pub fn with_sample_interval(mut self, dt: f64) -> Self {
        self.sample_interval = dt;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(ContactError::InvalidParameter { name, value, reason });
        match self.method {
            Method::FixedRk4 { step } if !(step.is_finite() && step > 0.0) => {
                return bad("step", step, "fixed step must be positive")
            }
            Method::AdaptiveRk45 { rel_tol, abs_tol } if !(rel_tol > 0.0 && abs_tol > 0.0) => {
                return bad("tolerance", rel_tol.min(abs_tol), "tolerances must be positive")
            }
            _ => {}
        }
        if self.max_steps == 0 {
            return bad("max_steps", 0.0, "must be positive");
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return bad("sample_interval", self.sample_interval, "must be positive");
        }
        Ok(())
    }
}

/// Per-sample diagnostics recorded along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostics {
    pub hamiltonian: f64,
    pub divergence: f64,
    pub invariants: Vec<f64>,
}

/// Time-ordered samples of a contact flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<ContactState>,
    diagnostics: Vec<SampleDiagnostics>,
    invariant_names: Vec<String>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ContactState] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[SampleDiagnostics] {
        &self.diagnostics
    }

    pub fn invariant_names(&self) -> &[String] {
        &self.invariant_names
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> ExtendedState {
        ExtendedState::new(self.states[i].clone(), self.times[i]).expect("trajectory samples are finite")
    }

    pub fn points(&self) -> impl Iterator<Item = ExtendedState> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn hamiltonian(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.hamiltonian).collect()
    }

    pub fn divergence(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.divergence).collect()
    }

    /// Evaluates `f` at every sample and stores the column under `name`.
    pub fn attach_invariant<F>(&mut self, name: impl Into<String>, f: F) -> Result<()>
    where
        F: Fn(&ExtendedState) -> Result<f64>,
    {
        let values = self.points().map(|x| f(&x)).collect::<Result<Vec<_>>>()?;
        for (d, v) in self.diagnostics.iter_mut().zip(values) {
            d.invariants.push(v);
        }
        self.invariant_names.push(name.into());
        Ok(())
    }

    pub fn invariant(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.invariant_names.iter().position(|n| n == name)?;
        Some(self.diagnostics.iter().map(|d| d.invariants[idx]).collect())
    }
}

fn check_dim(model: &HamiltonianModel, x: &ExtendedState) -> Result<()> {
    if x.dim() != model.dim() {
        return Err(ContactError::DimensionMismatch { expected: model.dim(), got: x.dim() });
    }
    Ok(())
}

/// Extended contact vector field at `x`.
pub fn vector_field(model: &HamiltonianModel, x: &ExtendedState) -> Result<Tangent> {
    check_dim(model, x)?;
    let h = model.eval(x)?;
    let d = model.partials(x)?;
    let p = x.p();
    let dq = d.dh_dp.clone();
    let dp: Vec<f64> = (0..x.dim()).map(|a| -d.dh_dq[a] - p[a] * d.dh_ds).collect();
    let ds = p.iter().zip(&d.dh_dp).map(|(pa, hp)| pa * hp).sum::<f64>() - h;
    let tangent = Tangent { dq, dp, ds, dt: 1.0 };
    if tangent.packed().iter().any(|v| !v.is_finite()) {
        return Err(ContactError::NonFinite { what: "vector field component", at: x.label() });
    }
    Ok(tangent)
}

fn packed_rhs(model: &HamiltonianModel) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    move |t, y, dy| {
        let x = ExtendedState::from_packed(y, t)?;
        let v = vector_field(model, &x)?;
        let n = x.dim();
        dy[..n].copy_from_slice(&v.dq);
        dy[n..2 * n].copy_from_slice(&v.dp);
        dy[2 * n] = v.ds;
        Ok(())
    }
}

/// One classical RK4 step of the extended field.
pub fn step_rk4(model: &HamiltonianModel, x: &ExtendedState, h: f64) -> Result<ExtendedState> {
    check_dim(model, x)?;
    if h == 0.0 || !h.is_finite() {
        return Err(ContactError::InvalidParameter { name: "h", value: h, reason: "step must be finite and non-zero" });
    }
    let mut rhs = packed_rhs(model);
    let y = ode::rk4_step(&mut rhs, x.t(), &x.state().packed(), h)?;
    ExtendedState::from_packed(&y, x.t() + h)
}

/// Uniform grid from `t0` to `t_end` (inclusive of `t_end`) with spacing at most `dt`.
pub fn sample_times(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let span = t_end - t0;
    let intervals = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (1..=intervals)
        .map(|k| if k == intervals { t_end } else { t0 + span * (k as f64) / (intervals as f64) })
        .collect()
}

fn run_packed<F>(rhs: F, t0: f64, y0: &[f64], times: &[f64], opts: &IntegratorOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    match opts.method {
        Method::FixedRk4 { step } => ode::solve_fixed_rk4(rhs, t0, y0, times, step, opts.max_steps),
        Method::AdaptiveRk45 { rel_tol, abs_tol } => {
            let adaptive = AdaptiveOptions { rel_tol, abs_tol, max_steps: opts.max_steps, max_step: None };
            ode::solve_adaptive(rhs, t0, y0, times, &adaptive, |_, _| Ok(()))
        }
    }
}

fn build_trajectory(model: &HamiltonianModel, times: Vec<f64>, packed: Vec<Vec<f64>>) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(times.len());
    let mut diagnostics = Vec::with_capacity(times.len());
    for (t, y) in times.iter().zip(&packed) {
        let x = ExtendedState::from_packed(y, *t)?;
        diagnostics.push(SampleDiagnostics {
            hamiltonian: model.eval(&x)?,
            divergence: divergence(model, &x)?,
            invariants: Vec::new(),
        });
        states.push(x.state().clone());
    }
    Ok(Trajectory { times, states, diagnostics, invariant_names: Vec::new() })
}

/// Integrates the flow from `init` to `t_end`, sampling at most every `sample_interval`.
pub fn integrate(
    model: &HamiltonianModel,
    init: &ExtendedState,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if !(t_end > init.t()) {
        return Err(ContactError::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "end time must exceed the initial time",
        });
    }
    let times = sample_times(init.t(), t_end, opts.sample_interval);
    integrate_at(model, init, &times, opts)
}

/// Integrates the flow and samples exactly at `times` (the initial state is prepended).
pub fn integrate_at(
    model: &HamiltonianModel,
    init: &ExtendedState,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    check_dim(model, init)?;
    let y0 = init.state().packed();
    let times: Vec<f64> = times.iter().copied().filter(|&t| t > init.t()).collect();
    let packed = run_packed(packed_rhs(model), init.t(), &y0, &times, opts)?;
    let mut all_times = vec![init.t()];
    all_times.extend_from_slice(&times);
    let mut all = vec![y0];
    all.extend(packed);
    build_trajectory(model, all_times, all)
}

/// `-(n + 1) dH/dS`.
pub fn divergence(model: &HamiltonianModel, x: &ExtendedState) -> Result<f64> {
    check_dim(model, x)?;
    let d = model.partials(x)?;
    Ok(-((x.dim() + 1) as f64) * d.dh_ds)
}

/// Density `|H|^-(n+1)` of the invariant measure, with the default threshold.
pub fn measure_weight(model: &HamiltonianModel, x: &ExtendedState) -> Result<f64> {
    measure_weight_with(model, x, MEASURE_EPSILON)
}

pub fn measure_weight_with(model: &HamiltonianModel, x: &ExtendedState, epsilon: f64) -> Result<f64> {
    let h = model.eval(x)?;
    if h.abs() <= epsilon {
        return Err(ContactError::SingularMeasure { value: h.abs(), threshold: epsilon });
    }
    Ok(h.abs().powi(-((x.dim() + 1) as i32)))
}

/// Rate of change of the observable `f` along the extended flow.
pub fn observable_rate(model: &HamiltonianModel, f: &PhaseFunction, x: &ExtendedState) -> Result<f64> {
    check_dim(model, x)?;
    if f.dim() != model.dim() {
        return Err(ContactError::DimensionMismatch { expected: model.dim(), got: f.dim() });
    }
    let h = model.eval(x)?;
    let dh = model.partials(x)?;
    let df = f.partials(x)?;
    let p = x.p();
    let mut rate = -h * df.dh_ds + df.dh_dt;
    for a in 0..x.dim() {
        rate += p[a] * (df.dh_ds * dh.dh_dp[a] - df.dh_dp[a] * dh.dh_ds);
        rate += df.dh_dq[a] * dh.dh_dp[a] - df.dh_dp[a] * dh.dh_dq[a];
    }
    Ok(rate)
}

/// `H_0 exp(-int h'(S) dt)` at every sample, by the trapezoid rule on the sample grid.
pub fn predicted_hamiltonian(model: &HamiltonianModel, traj: &Trajectory) -> Result<Vec<f64>> {
    let split = model
        .split()
        .ok_or_else(|| ContactError::Unsupported(format!("model `{}` exposes no H_mec + h(S) split", model.name())))?;
    if traj.is_empty() {
        return Err(ContactError::TooFewSamples { needed: 1, got: 0 });
    }
    let h0 = model.eval(&traj.point(0))?;
    let rates: Vec<f64> = traj.states().iter().map(|s| split.dissipation.derivative(s.s())).collect();
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(traj.len());
    out.push(h0);
    for i in 1..traj.len() {
        let dt = traj.times()[i] - traj.times()[i - 1];
        integral += 0.5 * dt * (rates[i] + rates[i - 1]);
        out.push(h0 * (-integral).exp());
    }
    Ok(out)
}

/// Eliminates `S` using the conserved `H_0` of the linear-dissipation model.
pub fn recover_s_linear(model: &HamiltonianModel, q: f64, p: f64, t: f64, h0: f64) -> Result<f64> {
    let ModelKind::LinearDissipation { mass, gamma, potential } = model.kind() else {
        return Err(ContactError::Unsupported(format!(
            "S recovery needs a linear-dissipation model, got `{}`",
            model.name()
        )));
    };
    if *gamma == 0.0 {
        return Err(ContactError::InvalidParameter {
            name: "gamma",
            value: 0.0,
            reason: "S cannot be recovered when gamma = 0",
        });
    }
    Ok((h0 * (-gamma * t).exp() - p * p / (2.0 * mass) - potential.eval(q)) / gamma)
}

/// Jacobian of the packed field `(dq, dp, dS)` with respect to `(q, p, S)` at fixed `t`.
pub fn field_jacobian(model: &HamiltonianModel, x: &ExtendedState) -> Result<DMatrix<f64>> {
    let dim = 2 * x.dim() + 1;
    let mut jac = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let h = fd_step(x.coordinate(j));
        let plus = vector_field(model, &x.shifted(j, h))?.packed();
        let minus = vector_field(model, &x.shifted(j, -h))?.packed();
        for i in 0..dim {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// A trajectory with the determinant of the linearised flow at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalTrajectory {
    pub trajectory: Trajectory,
    pub determinants: Vec<f64>,
}

/// Integrates the variational equations alongside the flow.
pub fn variational_flow(
    model: &HamiltonianModel,
    init: &ExtendedState,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<VariationalTrajectory> {
    opts.validate()?;
    check_dim(model, init)?;
    let n = init.dim();
    let dim = 2 * n + 1;
    let mut y0 = init.state().packed();
    let identity = DMatrix::<f64>::identity(dim, dim);
    y0.extend(identity.iter().copied());

    let times: Vec<f64> = if t_end > init.t() { sample_times(init.t(), t_end, opts.sample_interval) } else { Vec::new() };
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = ExtendedState::from_packed(&y[..dim], t)?;
        let v = vector_field(model, &x)?.packed();
        dy[..dim].copy_from_slice(&v);
        let jac = field_jacobian(model, &x)?;
        let phi = DMatrix::from_column_slice(dim, dim, &y[dim..]);
        let dphi = jac * phi;
        dy[dim..].copy_from_slice(dphi.as_slice());
        Ok(())
    };
    let packed = run_packed(rhs, init.t(), &y0, &times, opts)?;

    let mut all_times = vec![init.t()];
    all_times.extend_from_slice(&times);
    let mut all = vec![y0];
    all.extend(packed);
    let determinants = all
        .iter()
        .map(|y| DMatrix::from_column_slice(dim, dim, &y[dim..]).determinant())
        .collect();
    let states = all.into_iter().map(|mut y| {
        y.truncate(dim);
        y
    });
    let trajectory = build_trajectory(model, all_times, states.collect())?;
    Ok(VariationalTrajectory { trajectory, determinants })
}

/// Determinant of the flow's fundamental matrix on `(q, p, S)` at `t_end`.
pub fn flow_jacobian_determinant(
    model: &HamiltonianModel,
    init: &ExtendedState,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<f64> {
    if t_end == init.t() {
        check_dim(model, init)?;
        return Ok(1.0);
    }
    if t_end < init.t() {
        return Err(ContactError::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "end time must not precede the initial time",
        });
    }
    let var = variational_flow(model, init, t_end, opts)?;
    Ok(*var.determinants.last().expect("at least the initial sample"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_caldirola_kanai, make_custom, make_linear_dissipation, ModelFlags, ScalarFunction};
    use approx::assert_relative_eq;

    fn damped(gamma: f64) -> HamiltonianModel {
        make_linear_dissipation(1.0, gamma, ScalarFunction::quadratic(1.0)).unwrap()
    }

    fn zero_model() -> HamiltonianModel {
        make_custom(1, |_| 0.0, None, ModelFlags::default()).unwrap()
    }

    #[test]
    fn field_at_origin_and_displaced_point() {
        let model = damped(0.1);
        let v = vector_field(&model, &ExtendedState::point1(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(v, Tangent { dq: vec![0.0], dp: vec![0.0], ds: 0.0, dt: 1.0 });
        let v = vector_field(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(v.dq[0], 0.0);
        assert_relative_eq!(v.dp[0], -1.0);
        assert_relative_eq!(v.ds, -0.5);
    }

    #[test]
    fn s_independent_field_is_hamiltonian() {
        let model = damped(0.0);
        let x = ExtendedState::point1(0.4, -1.3, 2.0, 0.0);
        let v = vector_field(&model, &x).unwrap();
        assert_relative_eq!(v.dp[0], -0.4);
        assert_relative_eq!(v.dq[0], -1.3);
    }

    #[test]
    fn zero_model_step_only_advances_time() {
        let x = ExtendedState::point1(0.3, 0.2, -1.0, 1.0);
        let y = step_rk4(&zero_model(), &x, 0.25).unwrap();
        assert_eq!(y.state(), x.state());
        assert_eq!(y.t(), 1.25);
        assert!(step_rk4(&zero_model(), &x, 0.0).is_err());
    }

    #[test]
    fn rk4_step_matches_adaptive_reference() {
        let model = damped(0.1);
        let x = ExtendedState::point1(1.0, 0.0, 0.0, 0.0);
        let stepped = step_rk4(&model, &x, 1e-3).unwrap();
        let opts = IntegratorOptions::adaptive(1e-13, 1e-15);
        let reference = integrate_at(&model, &x, &[1e-3], &opts).unwrap().point(1);
        for (a, b) in stepped.state().packed().iter().zip(reference.state().packed()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rk4_returns_after_one_period() {
        let model = damped(0.0);
        let mut x = ExtendedState::point1(1.0, 0.0, 0.0, 0.0);
        let steps = 6283;
        let h = 2.0 * std::f64::consts::PI / steps as f64;
        for _ in 0..steps {
            x = step_rk4(&model, &x, h).unwrap();
        }
        assert!((x.q1() - 1.0).abs() < 1e-8);
        assert!(x.p1().abs() < 1e-8);
    }

    #[test]
    fn hamiltonian_decays_exponentially() {
        let model = damped(0.1);
        let traj = integrate(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 10.0, &IntegratorOptions::default()).unwrap();
        let h = traj.hamiltonian();
        assert_relative_eq!(*h.last().unwrap(), 0.5 * (-1.0f64).exp(), max_relative = 1e-8);
        assert_relative_eq!(*h.last().unwrap(), 0.18394, epsilon = 1e-5);
        assert_eq!(*traj.times().last().unwrap(), 10.0);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-12));
    }

    #[test]
    fn zero_model_trajectory_is_constant() {
        let x = ExtendedState::point1(0.5, 0.5, 0.5, 0.0);
        let traj = integrate(&zero_model(), &x, 3.0, &IntegratorOptions::default()).unwrap();
        assert!(traj.states().iter().all(|s| s == x.state()));
    }

    #[test]
    fn caldirola_kanai_reproduces_damped_newton() {
        let gamma = 0.1;
        let ck = make_caldirola_kanai(1.0, gamma, ScalarFunction::quadratic(1.0)).unwrap();
        let opts = IntegratorOptions::adaptive(1e-11, 1e-13);
        let x = ExtendedState::point1(1.0, 0.0, 0.0, 0.0);
        let a = integrate(&ck, &x, 10.0, &opts).unwrap();
        let b = integrate(&damped(gamma), &x, 10.0, &opts).unwrap();
        for (sa, sb) in a.states().iter().zip(b.states()) {
            assert!((sa.q()[0] - sb.q()[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn integrate_rejects_bad_inputs() {
        let model = damped(0.1);
        let x = ExtendedState::point1(1.0, 0.0, 0.0, 1.0);
        assert!(integrate(&model, &x, 0.5, &IntegratorOptions::default()).is_err());
        let opts = IntegratorOptions::adaptive(1e-9, 1e-12).with_max_steps(3);
        assert!(matches!(integrate(&model, &x, 100.0, &opts), Err(ContactError::MaxStepsExceeded { .. })));
        let opts = IntegratorOptions::fixed(-1.0);
        assert!(integrate(&model, &x, 2.0, &opts).is_err());
    }

    #[test]
    fn divergence_values() {
        let x = ExtendedState::point1(0.7, 0.1, 3.0, 0.0);
        assert_relative_eq!(divergence(&damped(0.1), &x).unwrap(), -0.2);
        assert_eq!(divergence(&damped(0.0), &x).unwrap(), 0.0);
        let quad = make_custom(1, |x| x.s() * x.s(), None, ModelFlags::default()).unwrap();
        assert_relative_eq!(divergence(&quad, &ExtendedState::point1(0.0, 0.0, 1.0, 0.0)).unwrap(), -4.0, max_relative = 1e-8);
    }

    #[test]
    fn measure_weight_values() {
        let half = make_custom(1, |_| 0.5, None, ModelFlags::default()).unwrap();
        let one = make_custom(1, |_| 1.0, None, ModelFlags::default()).unwrap();
        let x = ExtendedState::point1(0.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(measure_weight(&half, &x).unwrap(), 4.0);
        assert_relative_eq!(measure_weight(&one, &x).unwrap(), 1.0);
        assert!(matches!(measure_weight(&zero_model(), &x), Err(ContactError::SingularMeasure { .. })));
    }

    #[test]
    fn observable_rates() {
        let model = damped(0.1);
        let x = ExtendedState::point1(1.0, 2.0, 0.0, 0.0);
        let q_obs = PhaseFunction::new(1, std::sync::Arc::new(|x: &ExtendedState| Ok(x.q1())));
        assert_relative_eq!(observable_rate(&model, &q_obs, &x).unwrap(), 2.0, max_relative = 1e-8);

        let h = model.eval(&x).unwrap();
        let rate = observable_rate(&model, model.function(), &x).unwrap();
        assert_relative_eq!(rate, -h * 0.1, max_relative = 1e-12);

        let mech = &model.split().unwrap().mechanical;
        assert_relative_eq!(observable_rate(&model, mech, &x).unwrap(), -0.4, max_relative = 1e-12);
    }

    #[test]
    fn predicted_hamiltonian_tracks_samples() {
        let model = damped(0.1);
        let opts = IntegratorOptions::adaptive(1e-10, 1e-12).with_sample_interval(0.01);
        let traj = integrate(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 10.0, &opts).unwrap();
        let predicted = predicted_hamiltonian(&model, &traj).unwrap();
        for ((t, p), h) in traj.times().iter().zip(&predicted).zip(traj.hamiltonian()) {
            assert_relative_eq!(*p, 0.5 * (-0.1 * t).exp(), max_relative = 1e-12);
            assert!(((h - p) / p).abs() < 1e-6);
        }

        let conservative = damped(0.0);
        let traj = integrate(&conservative, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 1.0, &opts).unwrap();
        assert!(predicted_hamiltonian(&conservative, &traj).unwrap().iter().all(|&v| v == 0.5));
        let custom = zero_model();
        assert!(matches!(predicted_hamiltonian(&custom, &traj), Err(ContactError::Unsupported(_))));
    }

    #[test]
    fn s_recovery() {
        let model = damped(0.1);
        assert_eq!(recover_s_linear(&model, 1.0, 0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(recover_s_linear(&damped(0.0), 1.0, 0.0, 0.0, 0.5).is_err());
        let late = recover_s_linear(&model, 0.3, 0.2, 1e4, 0.5).unwrap();
        assert_relative_eq!(late, -(0.02 + 0.045) / 0.1, max_relative = 1e-12);

        let opts = IntegratorOptions::adaptive(1e-11, 1e-13);
        let traj = integrate(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 10.0, &opts).unwrap();
        for x in traj.points() {
            let s = recover_s_linear(&model, x.q1(), x.p1(), x.t(), 0.5).unwrap();
            assert!((s - x.s()).abs() < 1e-6);
        }
    }

    #[test]
    fn jacobian_determinant() {
        let opts = IntegratorOptions::adaptive(1e-10, 1e-12);
        let x = ExtendedState::point1(1.0, 0.0, 0.0, 0.0);
        let det = flow_jacobian_determinant(&damped(0.1), &x, 5.0, &opts).unwrap();
        assert!((det - (-1.0f64).exp()).abs() < 1e-5, "det = {det}");
        let det = flow_jacobian_determinant(&damped(0.0), &x, 5.0, &opts).unwrap();
        assert!((det - 1.0).abs() < 1e-8);
        assert_eq!(flow_jacobian_determinant(&damped(0.1), &x, 0.0, &opts).unwrap(), 1.0);
    }
}
