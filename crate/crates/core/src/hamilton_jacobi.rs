//! Contact Hamilton-Jacobi equation `H(q, dS/dq, S, t) + dS/dt = 0`.
//!
//! A principal function field carries `S(q, t)` with its partial derivatives and,
//! optionally, a family `S(q, c, t)` over constants `c`. Along characteristics the
//! quantities `b_i = dS/dc^i` obey `b_i' + (dH/dS) b_i = 0`; [`verify_b_condition`]
//! measures that residual on an integrated trajectory.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dynamics::Trajectory;
use crate::error::{ContactError, Result};
use crate::model::{fd_step, ExtendedState, HamiltonianModel};
use crate::oscillator::{hj_principal_function, NewtonBasis, RiccatiSolution};

pub type FieldFn = Arc<dyn Fn(&[f64], f64) -> Result<f64> + Send + Sync>;
pub type FieldGradFn = Arc<dyn Fn(&[f64], f64) -> Result<Vec<f64>> + Send + Sync>;
pub type FamilyFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Result<f64> + Send + Sync>;
pub type FamilyGradFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Result<Vec<f64>> + Send + Sync>;

/// `S(q, c, t)` with optional closed-form `dS/dc`.
#[derive(Clone)]
pub struct ParameterFamily {
    value: FamilyFn,
    ds_dc: Option<FamilyGradFn>,
    n_constants: usize,
}

impl ParameterFamily {
    pub fn new(
        n_constants: usize,
        value: impl Fn(&[f64], &[f64], f64) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), ds_dc: None, n_constants }
    }

    pub fn with_ds_dc(
        mut self,
        ds_dc: impl Fn(&[f64], &[f64], f64) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.ds_dc = Some(Arc::new(ds_dc));
        self
    }

    pub fn n_constants(&self) -> usize {
        self.n_constants
    }

    pub fn eval(&self, q: &[f64], c: &[f64], t: f64) -> Result<f64> {
        (self.value)(q, c, t)
    }

    /// Central differences of `S` over `c` with step `1e-6 max(1, |c_j|)`.
    pub fn finite_difference_ds_dc(&self, q: &[f64], c: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut shifted = c.to_vec();
        (0..c.len())
            .map(|j| {
                let h = fd_step(c[j]);
                shifted[j] = c[j] + h;
                let plus = self.eval(q, &shifted, t)?;
                shifted[j] = c[j] - h;
                let minus = self.eval(q, &shifted, t)?;
                shifted[j] = c[j];
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }

    pub fn ds_dc(&self, q: &[f64], c: &[f64], t: f64) -> Result<Vec<f64>> {
        match &self.ds_dc {
            Some(f) => f(q, c, t),
            None => self.finite_difference_ds_dc(q, c, t),
        }
    }
}

#[derive(Clone)]
pub struct PrincipalFunctionField {
    n: usize,
    s: FieldFn,
    ds_dq: FieldGradFn,
    ds_dt: FieldFn,
    family: Option<ParameterFamily>,
}

impl fmt::Debug for PrincipalFunctionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrincipalFunctionField")
            .field("n", &self.n)
            .field("family", &self.family.as_ref().map(|fam| fam.n_constants))
            .finish()
    }
}

impl PrincipalFunctionField {
    pub fn new(
        n: usize,
        s: impl Fn(&[f64], f64) -> Result<f64> + Send + Sync + 'static,
        ds_dq: impl Fn(&[f64], f64) -> Result<Vec<f64>> + Send + Sync + 'static,
        ds_dt: impl Fn(&[f64], f64) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { n, s: Arc::new(s), ds_dq: Arc::new(ds_dq), ds_dt: Arc::new(ds_dt), family: None }
    }

    pub fn with_family(mut self, family: ParameterFamily) -> Self {
        self.family = Some(family);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Option<&ParameterFamily> {
        self.family.as_ref()
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: q.len() });
        }
        Ok(())
    }

    pub fn value(&self, q: &[f64], t: f64) -> Result<f64> {
        self.check(q)?;
        (self.s)(q, t)
    }

    pub fn gradient(&self, q: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(q)?;
        (self.ds_dq)(q, t)
    }

    pub fn time_derivative(&self, q: &[f64], t: f64) -> Result<f64> {
        self.check(q)?;
        (self.ds_dt)(q, t)
    }

    /// Largest gap between the supplied partials and central differences of `S`.
    pub fn partials_mismatch(&self, q: &[f64], t: f64) -> Result<f64> {
        let grad = self.gradient(q, t)?;
        let mut worst: f64 = 0.0;
        let mut shifted = q.to_vec();
        for i in 0..self.n {
            let h = fd_step(q[i]);
            shifted[i] = q[i] + h;
            let plus = self.value(&shifted, t)?;
            shifted[i] = q[i] - h;
            let minus = self.value(&shifted, t)?;
            shifted[i] = q[i];
            worst = worst.max(((plus - minus) / (2.0 * h) - grad[i]).abs());
        }
        let h = fd_step(t);
        let fd_t = (self.value(q, t + h)? - self.value(q, t - h)?) / (2.0 * h);
        Ok(worst.max((fd_t - self.time_derivative(q, t)?).abs()))
    }

    /// `d^2 S / dq^i dc^j` by central differences in `q` of `dS/dc`.
    pub fn mixed_derivatives(&self, q: &[f64], c: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check(q)?;
        let family = self.require_family()?;
        let k = family.n_constants();
        let mut out = DMatrix::zeros(self.n, k);
        let mut shifted = q.to_vec();
        for i in 0..self.n {
            let h = fd_step(q[i]);
            shifted[i] = q[i] + h;
            let plus = family.ds_dc(&shifted, c, t)?;
            shifted[i] = q[i] - h;
            let minus = family.ds_dc(&shifted, c, t)?;
            shifted[i] = q[i];
            for j in 0..k {
                out[(i, j)] = (plus[j] - minus[j]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    fn require_family(&self) -> Result<&ParameterFamily> {
        self.family
            .as_ref()
            .ok_or_else(|| ContactError::Unsupported("principal function has no parameter family".into()))
    }
}

/// `H(q, dS/dq, S(q, t), t) + dS/dt`.
pub fn hj_residual(model: &HamiltonianModel, field: &PrincipalFunctionField, q: &[f64], t: f64) -> Result<f64> {
    if model.dim() != field.dim() {
        return Err(ContactError::DimensionMismatch { expected: model.dim(), got: field.dim() });
    }
    let x = ExtendedState::from_parts(q.to_vec(), field.gradient(q, t)?, field.value(q, t)?, t)?;
    Ok(model.eval(&x)? + field.time_derivative(q, t)?)
}

/// `E - H(q, p, S, t)`.
pub fn extended_f(model: &HamiltonianModel, x: &ExtendedState, e: f64) -> Result<f64> {
    Ok(e - model.eval(x)?)
}

/// `b_i = dS/dc^i` at `(q, c, t)`.
pub fn characteristic_b(field: &PrincipalFunctionField, c: &[f64], q: &[f64], t: f64) -> Result<Vec<f64>> {
    field.check(q)?;
    let family = field.require_family()?;
    if c.len() != family.n_constants() {
        return Err(ContactError::DimensionMismatch { expected: family.n_constants(), got: c.len() });
    }
    family.ds_dc(q, c, t)
}

/// Residuals of `b_i' + (dH/dS) b_i` at interior samples of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BConditionResiduals {
    pub times: Vec<f64>,
    /// `b_i(t)` at every sample.
    pub b: Vec<Vec<f64>>,
    /// One row per interior sample.
    pub residuals: Vec<Vec<f64>>,
    pub max_abs: f64,
}

/// Evaluates `b_i` along `traj` and the residual of `b_i' + (dH/dS) b_i`, with `b'`
/// from three-point centered differences on the (possibly non-uniform) sample grid.
pub fn verify_b_condition(
    model: &HamiltonianModel,
    field: &PrincipalFunctionField,
    c: &[f64],
    traj: &Trajectory,
) -> Result<BConditionResiduals> {
    if traj.len() < 3 {
        return Err(ContactError::TooFewSamples { needed: 3, got: traj.len() });
    }
    let points: Vec<ExtendedState> = traj.points().collect();
    let b = points
        .iter()
        .map(|x| characteristic_b(field, c, x.q(), x.t()))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = points.iter().map(|x| x.t()).collect();
    let k = c.len();
    let mut residuals = Vec::with_capacity(points.len() - 2);
    let mut max_abs: f64 = 0.0;
    for i in 1..points.len() - 1 {
        let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        let w_minus = -h1 / (h0 * (h0 + h1));
        let w_mid = (h1 - h0) / (h0 * h1);
        let w_plus = h0 / (h1 * (h0 + h1));
        let dh_ds = model.partials(&points[i])?.dh_ds;
        let row: Vec<f64> = (0..k)
            .map(|j| {
                let db = w_minus * b[i - 1][j] + w_mid * b[i][j] + w_plus * b[i + 1][j];
                db + dh_ds * b[i][j]
            })
            .collect();
        max_abs = row.iter().fold(max_abs, |acc, r| acc.max(r.abs()));
        residuals.push(row);
    }
    Ok(BConditionResiduals { times, b, residuals, max_abs })
}

/// Quadratic principal function `S = (m/2) C (q - lambda)^2 + m lambda' (q - lambda) + (m/2) lambda lambda'`
/// from a Riccati solution and its Newton companion, for `H = p^2/2m + m omega^2 q^2/2 + gamma S`.
pub fn riccati_field(m: f64, ric: &RiccatiSolution) -> PrincipalFunctionField {
    let r = ric.clone();
    let value = move |q: &[f64], t: f64| Ok(hj_principal_function(m, r.c(t)?, r.lambda(t)?, r.lambda_dot(t)?, q[0]));
    let r = ric.clone();
    let gradient = move |q: &[f64], t: f64| {
        let d = q[0] - r.lambda(t)?;
        Ok(vec![m * (r.c(t)? * d + r.lambda_dot(t)?)])
    };
    let r = ric.clone();
    let time = move |q: &[f64], t: f64| {
        let (c, l, ld, ldd) = (r.c(t)?, r.lambda(t)?, r.lambda_dot(t)?, r.lambda_ddot(t)?);
        let d = q[0] - l;
        Ok(0.5 * m * r.c_dot(t)? * d * d - m * c * ld * d + m * ldd * d - 0.5 * m * ld * ld + 0.5 * m * l * ldd)
    };
    PrincipalFunctionField::new(1, value, gradient, time)
}

/// The family `S(q, c, t) = (m/2) C(t; c) q^2`, where `C(t; c)` is the Riccati solution
/// with `C(t0) = c`, evaluated at `c = c0`. `dS/dc = (m/2) (dC/dc) q^2` is closed form.
pub fn oscillator_family_field(m: f64, basis: &NewtonBasis, c0: f64) -> PrincipalFunctionField {
    let b = basis.clone();
    let value = move |q: &[f64], t: f64| Ok(0.5 * m * b.riccati(c0, t)? * q[0] * q[0]);
    let b = basis.clone();
    let gradient = move |q: &[f64], t: f64| Ok(vec![m * b.riccati(c0, t)? * q[0]]);
    let b = basis.clone();
    let time = move |q: &[f64], t: f64| {
        let c = b.riccati(c0, t)?;
        let w = b.frequency().eval(t);
        Ok(0.5 * m * (-c * c - b.gamma() * c - w * w) * q[0] * q[0])
    };
    let b = basis.clone();
    let family_value = move |q: &[f64], c: &[f64], t: f64| Ok(0.5 * m * b.riccati(c[0], t)? * q[0] * q[0]);
    let b = basis.clone();
    let family_ds_dc = move |q: &[f64], c: &[f64], t: f64| Ok(vec![0.5 * m * b.sensitivity(c[0], t)? * q[0] * q[0]]);
    PrincipalFunctionField::new(1, value, gradient, time)
        .with_family(ParameterFamily::new(1, family_value).with_ds_dc(family_ds_dc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorOptions};
    use crate::model::{make_custom, make_damped_parametric, make_linear_dissipation, ModelFlags, ScalarFunction};
    use crate::oscillator::{solve_riccati, uniform_grid};
    use approx::assert_relative_eq;

    fn free_particle_field() -> PrincipalFunctionField {
        PrincipalFunctionField::new(
            1,
            |q, t| Ok(q[0] * q[0] / (2.0 * (1.0 + t))),
            |q, t| Ok(vec![q[0] / (1.0 + t)]),
            |q, t| Ok(-q[0] * q[0] / (2.0 * (1.0 + t).powi(2))),
        )
    }

    #[test]
    fn conservative_free_particle_solves_hj() {
        let model = make_linear_dissipation(1.0, 0.0, ScalarFunction::zero()).unwrap();
        let field = free_particle_field();
        for &(q, t) in &[(0.0, 0.0), (1.5, 0.3), (-2.0, 4.0)] {
            assert!(hj_residual(&model, &field, &[q], t).unwrap().abs() < 1e-15);
            assert!(field.partials_mismatch(&[q], t).unwrap() < 1e-5);
        }
    }

    #[test]
    fn zero_field_for_pure_damping() {
        let model = make_custom(1, |x| 0.2 * x.s(), None, ModelFlags { depends_on_s: true, depends_on_t: false }).unwrap();
        let zero = PrincipalFunctionField::new(1, |_, _| Ok(0.0), |_, _| Ok(vec![0.0]), |_, _| Ok(0.0));
        assert_eq!(hj_residual(&model, &zero, &[1.3], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn extended_function_values() {
        let model = make_linear_dissipation(1.0, 0.1, ScalarFunction::quadratic(1.0)).unwrap();
        let x = ExtendedState::point1(1.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(extended_f(&model, &x, 1.0).unwrap(), 0.5);
        assert_eq!(extended_f(&model, &x, model.eval(&x).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn riccati_field_solves_damped_oscillator_equation() {
        let (m, gamma) = (1.0, 0.1);
        let w = ScalarFunction::new("1 + 0.1 sin 0.3t", |t| 1.0 + 0.1 * (0.3 * t).sin(), |t| 0.03 * (0.3 * t).cos());
        // C0 = 0.3 keeps lambda away from zero on [0, 1]
        let ric = solve_riccati(w.clone(), gamma, 0.3, &uniform_grid(0.0, 1.0, 201)).unwrap();
        let field = riccati_field(m, &ric);
        let model = make_damped_parametric(m, gamma, w).unwrap();
        for &q in &[-2.0, -0.5, 0.0, 1.0, 2.0] {
            for &t in &[0.0, 0.25, 0.6, 1.0] {
                assert!(hj_residual(&model, &field, &[q], t).unwrap().abs() < 1e-9);
            }
            assert!(field.partials_mismatch(&[q], 0.5).unwrap() < 1e-5);
        }
    }

    #[test]
    fn family_b_and_mixed_derivatives() {
        let grid = uniform_grid(0.0, 10.0, 1001);
        let basis = NewtonBasis::solve(ScalarFunction::zero(), 0.1, &grid).unwrap();
        let field = oscillator_family_field(1.0, &basis, 0.2);
        assert_relative_eq!(characteristic_b(&field, &[0.2], &[1.0], 0.0).unwrap()[0], 0.5, max_relative = 1e-12);
        assert_eq!(characteristic_b(&field, &[0.2], &[0.0], 3.0).unwrap()[0], 0.0);
        let fd = field.family().unwrap().finite_difference_ds_dc(&[1.3], &[0.2], 4.0).unwrap()[0];
        assert_relative_eq!(characteristic_b(&field, &[0.2], &[1.3], 4.0).unwrap()[0], fd, max_relative = 1e-7);
        let mixed = field.mixed_derivatives(&[1.0], &[0.2], 2.0).unwrap();
        assert!(mixed[(0, 0)].abs() > 1e-3);
        assert!(characteristic_b(&free_particle_field(), &[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn b_condition_on_damped_free_particle() {
        let (m, gamma, c0, q0) = (1.0, 0.1, 0.2, 1.0);
        let grid = uniform_grid(0.0, 10.0, 2001);
        let basis = NewtonBasis::solve(ScalarFunction::zero(), gamma, &grid).unwrap();
        let field = oscillator_family_field(m, &basis, c0);
        let model = make_linear_dissipation(m, gamma, ScalarFunction::zero()).unwrap();
        let p0 = field.gradient(&[q0], 0.0).unwrap()[0];
        let s0 = field.value(&[q0], 0.0).unwrap();
        let init = ExtendedState::point1(q0, p0, s0, 0.0);
        let opts = IntegratorOptions::adaptive(1e-11, 1e-13).with_sample_interval(0.01);
        let traj = integrate(&model, &init, 10.0, &opts).unwrap();
        let report = verify_b_condition(&model, &field, &[c0], &traj).unwrap();
        assert!(report.max_abs < 1e-6, "{}", report.max_abs);
        let b0 = report.b[0][0];
        for (t, b) in report.times.iter().zip(&report.b) {
            assert!((b[0] / b0 - (-gamma * t).exp()).abs() < 1e-6);
        }
        // characteristics: p follows dS/dq along the flow
        for x in traj.points() {
            assert!((x.p1() - field.gradient(x.q(), x.t()).unwrap()[0]).abs() < 1e-5);
        }
    }

    #[test]
    fn b_condition_needs_three_samples() {
        let grid = uniform_grid(0.0, 1.0, 11);
        let basis = NewtonBasis::solve(ScalarFunction::zero(), 0.1, &grid).unwrap();
        let field = oscillator_family_field(1.0, &basis, 0.2);
        let model = make_linear_dissipation(1.0, 0.1, ScalarFunction::zero()).unwrap();
        let traj = integrate(&model, &ExtendedState::point1(1.0, 0.2, 0.1, 0.0), 0.05, &IntegratorOptions::default()).unwrap();
        assert!(matches!(verify_b_condition(&model, &field, &[0.2], &traj), Err(ContactError::TooFewSamples { .. })));
    }
}
