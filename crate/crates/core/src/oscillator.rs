//! Semi-analytic solutions of the damped parametric oscillator
//! `H = p^2/2m + m omega(t)^2 q^2 / 2 + gamma S`.
//!
//! Three independent descriptions are provided:
//!
//! * the Ermakov amplitude `alpha(t)` with `alpha'' + (omega^2 - gamma^2/4) alpha = alpha^-3`,
//!   the quadratic (Lewis-type) invariant and the `S`-dependent invariant built from it;
//! * the Riccati coefficient `C(t)` with `C' + C^2 + gamma C + omega^2 = 0` and its
//!   companion `lambda'' + gamma lambda' + omega^2 lambda = 0`, which together give the
//!   quadratic principal function of the contact Hamilton-Jacobi equation;
//! * closed forms for the damped free particle (`omega = 0`).

use std::sync::Arc;

use crate::error::{ContactError, Result};
use crate::model::{ContactState, ExtendedState, ScalarFunction};
use crate::ode::{self, AdaptiveOptions, HermiteTable};

/// `alpha` below this value aborts the Ermakov solve.
pub const ERMAKOV_COLLAPSE: f64 = 1e-6;
/// `|C|` above this value is reported as a Riccati pole.
pub const RICCATI_BLOWUP: f64 = 1e8;

fn solver_options() -> AdaptiveOptions {
    AdaptiveOptions { rel_tol: 1e-11, abs_tol: 1e-13, max_steps: 5_000_000, max_step: None }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(ContactError::TooFewSamples { needed: 2, got: grid.len() });
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ContactError::InvalidState("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `n` equally spaced points from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| if i + 1 == n { end } else { start + (end - start) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn shifted_frequency_sq(frequency: &ScalarFunction, gamma: f64, t: f64) -> f64 {
    let w = frequency.eval(t);
    w * w - 0.25 * gamma * gamma
}

/// Dense solution of the Ermakov equation with the cumulative phase
/// `phi(t) = int_{t0}^t d tau / alpha^2`.
#[derive(Debug, Clone)]
pub struct ErmakovSolution {
    table: Arc<HermiteTable>,
    gamma: f64,
    frequency: ScalarFunction,
    alpha0: f64,
    alpha_dot0: f64,
}

const ALPHA: usize = 0;
const ALPHA_DOT: usize = 1;
const PHASE: usize = 2;

impl ErmakovSolution {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn frequency(&self) -> &ScalarFunction {
        &self.frequency
    }

    pub fn initial(&self) -> (f64, f64) {
        (self.alpha0, self.alpha_dot0)
    }

    pub fn start(&self) -> f64 {
        self.table.start()
    }

    pub fn end(&self) -> f64 {
        self.table.end()
    }

    pub fn grid(&self) -> &[f64] {
        self.table.times()
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.table.eval(ALPHA, t)?.0)
    }

    pub fn alpha_dot(&self, t: f64) -> Result<f64> {
        Ok(self.table.eval(ALPHA_DOT, t)?.0)
    }

    /// `alpha''` from the Ermakov equation at the interpolated amplitude.
    pub fn alpha_ddot(&self, t: f64) -> Result<f64> {
        let a = self.alpha(t)?;
        Ok(-shifted_frequency_sq(&self.frequency, self.gamma, t) * a + a.powi(-3))
    }

    pub fn phase(&self, t: f64) -> Result<f64> {
        Ok(self.table.eval(PHASE, t)?.0)
    }

    /// Largest `|alpha'' + Omega^2 alpha - alpha^-3|` over interior grid points, with
    /// `alpha''` from a five-point difference of the sampled `alpha'`.
    pub fn residual_max(&self) -> f64 {
        let times = self.table.times();
        let mut worst: f64 = 0.0;
        for i in 2..times.len().saturating_sub(2) {
            let h = times[i + 1] - times[i];
            let uniform = (times[i] - times[i - 1] - h).abs() < 1e-9 * h
                && (times[i + 2] - times[i + 1] - h).abs() < 1e-9 * h
                && (times[i - 1] - times[i - 2] - h).abs() < 1e-9 * h;
            if !uniform {
                continue;
            }
            let v = |j: usize| self.table.sample(j).0[ALPHA_DOT];
            let ddot = (-v(i + 2) + 8.0 * v(i + 1) - 8.0 * v(i - 1) + v(i - 2)) / (12.0 * h);
            let a = self.table.sample(i).0[ALPHA];
            let r = ddot + shifted_frequency_sq(&self.frequency, self.gamma, times[i]) * a - a.powi(-3);
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Integrates the Ermakov equation on `grid` (the first grid point is the initial time).
pub fn solve_ermakov(
    frequency: ScalarFunction,
    gamma: f64,
    alpha0: f64,
    alpha_dot0: f64,
    grid: &[f64],
) -> Result<ErmakovSolution> {
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(ContactError::InvalidParameter { name: "alpha0", value: alpha0, reason: "must be positive" });
    }
    check_grid(grid)?;
    let w = frequency.clone();
    let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let a = y[ALPHA];
        dy[ALPHA] = y[ALPHA_DOT];
        dy[ALPHA_DOT] = -shifted_frequency_sq(&w, gamma, t) * a + a.powi(-3);
        dy[PHASE] = 1.0 / (a * a);
        Ok(())
    };
    let y0 = [alpha0, alpha_dot0, 0.0];
    let guard = |t: f64, y: &[f64]| {
        if y[ALPHA] < ERMAKOV_COLLAPSE {
            Err(ContactError::Collapse { what: "Ermakov amplitude alpha", t })
        } else {
            Ok(())
        }
    };
    let rhs_sampler = rhs.clone();
    let mut values = vec![y0.to_vec()];
    values.extend(ode::solve_adaptive(rhs, grid[0], &y0, &grid[1..], &solver_options(), guard)?);
    let derivatives = grid
        .iter()
        .zip(&values)
        .map(|(&t, y)| {
            let mut dy = vec![0.0; 3];
            rhs_sampler(t, y, &mut dy).map(|_| dy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErmakovSolution {
        table: Arc::new(HermiteTable::new(grid.to_vec(), values, derivatives)?),
        gamma,
        frequency,
        alpha0,
        alpha_dot0,
    })
}

fn single_dof(x: &ExtendedState) -> Result<(f64, f64)> {
    if x.dim() != 1 {
        return Err(ContactError::DimensionMismatch { expected: 1, got: x.dim() });
    }
    Ok((x.q1(), x.p1()))
}

/// Quadratic invariant `(m e^{gamma t}/2) [(alpha p/m - (alpha' - gamma alpha/2) q)^2 + (q/alpha)^2]`.
pub fn lewis_invariant(m: f64, gamma: f64, erm: &ErmakovSolution, x: &ExtendedState) -> Result<f64> {
    let (q, p) = single_dof(x)?;
    let t = x.t();
    let a = erm.alpha(t)?;
    let shifted = erm.alpha_dot(t)? - 0.5 * gamma * a;
    let w = a * p / m - shifted * q;
    Ok(0.5 * m * (gamma * t).exp() * (w * w + (q / a).powi(2)))
}

/// `S`-dependent invariant `e^{gamma t} (S - q p / 2)`.
pub fn g_invariant(gamma: f64, x: &ExtendedState) -> Result<f64> {
    let (q, p) = single_dof(x)?;
    Ok((gamma * x.t()).exp() * (x.s() - 0.5 * q * p))
}

/// Constants of motion fixing an invariant-based solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantData {
    pub lewis: f64,
    pub g: f64,
    /// Phase at the start of the Ermakov grid.
    pub phase0: f64,
}

/// Reads `(I, G, phi_0)` off a state `x` lying in the Ermakov solution's range.
pub fn invariant_data(m: f64, gamma: f64, erm: &ErmakovSolution, x: &ExtendedState) -> Result<InvariantData> {
    let (q, p) = single_dof(x)?;
    let t = x.t();
    let lewis = lewis_invariant(m, gamma, erm, x)?;
    let g = g_invariant(gamma, x)?;
    let a = erm.alpha(t)?;
    let shifted = erm.alpha_dot(t)? - 0.5 * gamma * a;
    // q / alpha = A cos(phi), alpha p / m - shifted q = -A sin(phi)
    let cos_part = q / a;
    let sin_part = -(a * p / m - shifted * q);
    let phi = if lewis == 0.0 { 0.0 } else { sin_part.atan2(cos_part) };
    Ok(InvariantData { lewis, g, phase0: phi - erm.phase(t)? })
}

/// Exponential prefactor used when inverting the invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeConvention {
    /// `e^{-gamma t / 2}`, the form consistent with constancy of the quadratic invariant.
    #[default]
    Consistent,
    /// `e^{+gamma t}`, kept to demonstrate that it does not solve the equations of motion.
    PrintedExponent,
}

/// Physical state reconstructed from `(I, G, phi_0)` and the Ermakov solution.
pub fn analytic_state(
    m: f64,
    gamma: f64,
    erm: &ErmakovSolution,
    lewis: f64,
    g: f64,
    phase0: f64,
    t: f64,
) -> Result<ContactState> {
    analytic_state_with(m, gamma, erm, lewis, g, phase0, t, AmplitudeConvention::Consistent)
}

#[allow(clippy::too_many_arguments)]
pub fn analytic_state_with(
    m: f64,
    gamma: f64,
    erm: &ErmakovSolution,
    lewis: f64,
    g: f64,
    phase0: f64,
    t: f64,
    convention: AmplitudeConvention,
) -> Result<ContactState> {
    if !(lewis >= 0.0) {
        return Err(ContactError::InvalidParameter {
            name: "I",
            value: lewis,
            reason: "the quadratic invariant is non-negative",
        });
    }
    let a = erm.alpha(t)?;
    let shifted = erm.alpha_dot(t)? - 0.5 * gamma * a;
    let phi = phase0 + erm.phase(t)?;
    let envelope = match convention {
        AmplitudeConvention::Consistent => (-0.5 * gamma * t).exp(),
        AmplitudeConvention::PrintedExponent => (gamma * t).exp(),
    };
    let q = (2.0 * lewis / m).sqrt() * envelope * a * phi.cos();
    let p = (2.0 * m * lewis).sqrt() * envelope * (shifted * phi.cos() - phi.sin() / a);
    let s = (-gamma * t).exp() * g + 0.5 * q * p;
    ContactState::new(vec![q], vec![p], s)
}

/// Coefficients of `F = beta p^2 - 2 xi q p + eta q^2 + zeta S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub beta: f64,
    pub eta: f64,
    pub xi: f64,
    pub zeta: f64,
}

impl QuadraticCoefficients {
    pub fn evaluate(&self, q: f64, p: f64, s: f64) -> f64 {
        self.beta * p * p - 2.0 * self.xi * q * p + self.eta * q * q + self.zeta * s
    }
}

/// Coefficients of the general quadratic invariant `I + zeta_0 G` at time `t`.
pub fn quadratic_invariant_coefficients(
    m: f64,
    gamma: f64,
    zeta0: f64,
    erm: &ErmakovSolution,
    t: f64,
) -> Result<QuadraticCoefficients> {
    let a = erm.alpha(t)?;
    let shifted = erm.alpha_dot(t)? - 0.5 * gamma * a;
    let grow = (gamma * t).exp();
    Ok(QuadraticCoefficients {
        beta: grow * a * a / (2.0 * m),
        eta: grow * 0.5 * m * (shifted * shifted + 1.0 / (a * a)),
        xi: grow * (0.5 * a * shifted + 0.25 * zeta0),
        zeta: zeta0 * grow,
    })
}

/// How a Riccati solution is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiMode {
    /// Integrate `C` directly and fail at the first pole.
    Direct,
    /// Represent `C = lambda'/lambda` through the damped Newton companion, which
    /// stays finite across the poles of `C`.
    Linearized,
}

/// Dense Riccati solution `C(t)` with its Newton companion `lambda(t)`,
/// `lambda(t0) = 1`, `lambda'(t0) = C_0`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    table: Arc<HermiteTable>,
    mode: RiccatiMode,
    gamma: f64,
    frequency: ScalarFunction,
    c0: f64,
}

impl RiccatiSolution {
    pub fn mode(&self) -> RiccatiMode {
        self.mode
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn frequency(&self) -> &ScalarFunction {
        &self.frequency
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn grid(&self) -> &[f64] {
        self.table.times()
    }

    pub fn start(&self) -> f64 {
        self.table.start()
    }

    pub fn end(&self) -> f64 {
        self.table.end()
    }

    fn lambda_index(&self) -> usize {
        match self.mode {
            RiccatiMode::Direct => 1,
            RiccatiMode::Linearized => 0,
        }
    }

    pub fn lambda(&self, t: f64) -> Result<f64> {
        Ok(self.table.eval(self.lambda_index(), t)?.0)
    }

    pub fn lambda_dot(&self, t: f64) -> Result<f64> {
        Ok(self.table.eval(self.lambda_index() + 1, t)?.0)
    }

    /// `lambda''` from the damped Newton equation.
    pub fn lambda_ddot(&self, t: f64) -> Result<f64> {
        let w = self.frequency.eval(t);
        Ok(-self.gamma * self.lambda_dot(t)? - w * w * self.lambda(t)?)
    }

    pub fn c(&self, t: f64) -> Result<f64> {
        match self.mode {
            RiccatiMode::Direct => Ok(self.table.eval(0, t)?.0),
            RiccatiMode::Linearized => {
                let l = self.lambda(t)?;
                let c = self.lambda_dot(t)? / l;
                if !c.is_finite() || c.abs() > RICCATI_BLOWUP {
                    return Err(ContactError::RiccatiPole { t });
                }
                Ok(c)
            }
        }
    }

    /// `C'` from the Riccati equation.
    pub fn c_dot(&self, t: f64) -> Result<f64> {
        let c = self.c(t)?;
        let w = self.frequency.eval(t);
        Ok(-c * c - self.gamma * c - w * w)
    }

    /// Largest `|C - lambda'/lambda|` over grid points with `|lambda| > min_lambda`.
    pub fn link_residual_max(&self, min_lambda: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &t in self.grid() {
            let l = self.lambda(t)?;
            if l.abs() <= min_lambda {
                continue;
            }
            worst = worst.max((self.c(t)? - self.lambda_dot(t)? / l).abs());
        }
        Ok(worst)
    }
}

/// Solves `C' = -C^2 - gamma C - omega^2` from `C(t0) = C_0`, co-solving the Newton companion.
pub fn solve_riccati(frequency: ScalarFunction, gamma: f64, c0: f64, grid: &[f64]) -> Result<RiccatiSolution> {
    solve_riccati_with(frequency, gamma, c0, grid, RiccatiMode::Direct)
}

pub fn solve_riccati_with(
    frequency: ScalarFunction,
    gamma: f64,
    c0: f64,
    grid: &[f64],
    mode: RiccatiMode,
) -> Result<RiccatiSolution> {
    Ok(solve_riccati_batch(frequency, gamma, &[c0], grid, mode)?.remove(0))
}

/// Solves for several initial values in one stacked system, so that all members share
/// the same step sequence and differences between them are free of step-selection noise.
pub fn solve_riccati_batch(
    frequency: ScalarFunction,
    gamma: f64,
    c0s: &[f64],
    grid: &[f64],
    mode: RiccatiMode,
) -> Result<Vec<RiccatiSolution>> {
    check_grid(grid)?;
    if let Some(&bad) = c0s.iter().find(|c| !c.is_finite()) {
        return Err(ContactError::InvalidParameter { name: "C0", value: bad, reason: "must be finite" });
    }
    if c0s.is_empty() {
        return Ok(Vec::new());
    }
    // per member: Direct -> [C, lambda, lambda'], Linearized -> [lambda, lambda']
    let width = match mode {
        RiccatiMode::Direct => 3,
        RiccatiMode::Linearized => 2,
    };
    let w = frequency.clone();
    let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let om2 = w.eval(t).powi(2);
        for (yk, dk) in y.chunks(width).zip(dy.chunks_mut(width)) {
            let l = width - 2;
            if l == 1 {
                dk[0] = -yk[0] * yk[0] - gamma * yk[0] - om2;
            }
            dk[l] = yk[l + 1];
            dk[l + 1] = -gamma * yk[l + 1] - om2 * yk[l];
        }
        Ok(())
    };
    let guard = |t: f64, y: &[f64]| {
        if width == 3 && y.chunks(width).any(|yk| !(yk[0].abs() <= RICCATI_BLOWUP)) {
            Err(ContactError::RiccatiPole { t })
        } else {
            Ok(())
        }
    };
    let y0: Vec<f64> = c0s
        .iter()
        .flat_map(|&c| if width == 3 { vec![c, 1.0, c] } else { vec![1.0, c] })
        .collect();
    let mut sampler = rhs.clone();
    let mut values = vec![y0.clone()];
    let solved = ode::solve_adaptive(rhs, grid[0], &y0, &grid[1..], &solver_options(), guard).map_err(|e| match e {
        ContactError::StepSizeUnderflow { t, .. } if mode == RiccatiMode::Direct => ContactError::RiccatiPole { t },
        other => other,
    })?;
    values.extend(solved);
    let derivs = sample_derivatives(&mut sampler, grid, &values)?;
    c0s.iter()
        .enumerate()
        .map(|(k, &c0)| {
            let slice = |rows: &[Vec<f64>]| rows.iter().map(|r| r[k * width..(k + 1) * width].to_vec()).collect();
            Ok(RiccatiSolution {
                table: Arc::new(HermiteTable::new(grid.to_vec(), slice(&values), slice(&derivs))?),
                mode,
                gamma,
                frequency: frequency.clone(),
                c0,
            })
        })
        .collect()
}

fn sample_derivatives<F>(rhs: &mut F, grid: &[f64], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    grid.iter()
        .zip(values)
        .map(|(&t, y)| {
            let mut dy = vec![0.0; y.len()];
            rhs(t, y, &mut dy).map(|_| dy)
        })
        .collect()
}

/// Closed-form Riccati solution for `omega = 0`:
/// `C(t) = e^{-gamma t} / (1/C_0 + (1 - e^{-gamma t})/gamma)`.
pub fn riccati_free_particle(gamma: f64, c0: f64, t: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(ContactError::InvalidParameter { name: "gamma", value: gamma, reason: "must be non-negative" });
    }
    if c0 == 0.0 {
        return Ok(0.0);
    }
    let growth = if gamma == 0.0 { t } else { -(-gamma * t).exp_m1() / gamma };
    let denom = 1.0 / c0 + growth;
    if denom == 0.0 || denom.signum() != c0.signum() {
        // 1/C0 + (1 - e^{-gamma t*})/gamma = 0
        let pole = if gamma == 0.0 { -1.0 / c0 } else { -(1.0 + gamma / c0).ln() / gamma };
        return Err(ContactError::RiccatiPole { t: pole });
    }
    Ok((-gamma * t).exp() / denom)
}

/// Quadratic principal function
/// `S = (m/2) C (q - lambda)^2 + m lambda' (q - lambda) + (m/2) lambda lambda'`.
pub fn hj_principal_function(m: f64, c: f64, lambda: f64, lambda_dot: f64, q: f64) -> f64 {
    let d = q - lambda;
    0.5 * m * c * d * d + m * lambda_dot * d + 0.5 * m * lambda * lambda_dot
}

/// Trajectory recovered from the Hamilton-Jacobi family `S(q, C_0, t)` with
/// `b(t) = b_0 e^{-gamma t}`; the sensitivity `dC/dC_0` comes from two
/// additional Riccati solves at `C_0 +- delta`.
#[derive(Debug, Clone)]
pub struct HjTrajectory {
    m: f64,
    gamma: f64,
    b0: f64,
    delta: f64,
    base: RiccatiSolution,
    plus: RiccatiSolution,
    minus: RiccatiSolution,
}

impl HjTrajectory {
    pub fn new(m: f64, gamma: f64, b0: f64, c0: f64, ric: &RiccatiSolution) -> Result<Self> {
        if !(b0 > 0.0) {
            return Err(ContactError::InvalidParameter { name: "b0", value: b0, reason: "must be positive" });
        }
        if !(m > 0.0) {
            return Err(ContactError::InvalidParameter { name: "m", value: m, reason: "mass must be positive" });
        }
        let delta = 1e-6 * c0.abs().max(1.0);
        let mut pair =
            solve_riccati_batch(ric.frequency().clone(), gamma, &[c0 + delta, c0 - delta], ric.grid(), ric.mode())?;
        let minus = pair.pop().expect("two members");
        let plus = pair.pop().expect("two members");
        Ok(Self { m, gamma, b0, delta, base: ric.clone(), plus, minus })
    }

    /// Central-difference estimate of `dC/dC_0` at `t`.
    pub fn sensitivity(&self, t: f64) -> Result<f64> {
        Ok((self.plus.c(t)? - self.minus.c(t)?) / (2.0 * self.delta))
    }

    pub fn q(&self, t: f64) -> Result<f64> {
        let sens = self.sensitivity(t)?;
        if !(sens > 0.0) || !sens.is_finite() {
            return Err(ContactError::Branch(format!("dC/dC0 = {sens} is not positive at t = {t}")));
        }
        let magnitude = (2.0 * self.b0 * (-self.gamma * t).exp() / (self.m * sens)).sqrt();
        // The square root fixes |q|; across poles of C the sign follows lambda.
        let sign = match self.base.mode() {
            RiccatiMode::Direct => 1.0,
            RiccatiMode::Linearized => self.base.lambda(t)?.signum(),
        };
        Ok(sign * magnitude)
    }
}

/// `q(t) = sqrt((2 b_0 e^{-gamma t} / m) (dC/dC_0)^{-1})`.
pub fn trajectory_from_hj(m: f64, gamma: f64, b0: f64, c0: f64, ric: &RiccatiSolution, t: f64) -> Result<f64> {
    HjTrajectory::new(m, gamma, b0, c0, ric)?.q(t)
}

/// Fundamental solutions `u1, u2` of `lambda'' + gamma lambda' + omega^2 lambda = 0`
/// with `u1(t0) = 1, u1'(t0) = 0, u2(t0) = 0, u2'(t0) = 1`. Every Riccati solution is
/// `C(t; c) = (u1' + c u2') / (u1 + c u2)`.
#[derive(Debug, Clone)]
pub struct NewtonBasis {
    table: Arc<HermiteTable>,
    gamma: f64,
    frequency: ScalarFunction,
}

impl NewtonBasis {
    pub fn solve(frequency: ScalarFunction, gamma: f64, grid: &[f64]) -> Result<Self> {
        check_grid(grid)?;
        let w = frequency.clone();
        let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let om2 = w.eval(t).powi(2);
            dy[0] = y[1];
            dy[1] = -gamma * y[1] - om2 * y[0];
            dy[2] = y[3];
            dy[3] = -gamma * y[3] - om2 * y[2];
            Ok(())
        };
        let y0 = [1.0, 0.0, 0.0, 1.0];
        let mut sampler = rhs.clone();
        let mut values = vec![y0.to_vec()];
        values.extend(ode::solve_adaptive(rhs, grid[0], &y0, &grid[1..], &solver_options(), |_, _| Ok(()))?);
        let derivs = sample_derivatives(&mut sampler, grid, &values)?;
        Ok(Self { table: Arc::new(HermiteTable::new(grid.to_vec(), values, derivs)?), gamma, frequency })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn frequency(&self) -> &ScalarFunction {
        &self.frequency
    }

    pub fn start(&self) -> f64 {
        self.table.start()
    }

    pub fn end(&self) -> f64 {
        self.table.end()
    }

    /// `(lambda, lambda')` for `lambda(t0) = 1`, `lambda'(t0) = c`.
    pub fn lambda(&self, c: f64, t: f64) -> Result<(f64, f64)> {
        let u1 = self.table.eval(0, t)?.0;
        let du1 = self.table.eval(1, t)?.0;
        let u2 = self.table.eval(2, t)?.0;
        let du2 = self.table.eval(3, t)?.0;
        Ok((u1 + c * u2, du1 + c * du2))
    }

    /// `dC/dc = W / lambda^2` with the Wronskian `W = u1 u2' - u2 u1'`.
    pub fn sensitivity(&self, c: f64, t: f64) -> Result<f64> {
        let u1 = self.table.eval(0, t)?.0;
        let du1 = self.table.eval(1, t)?.0;
        let u2 = self.table.eval(2, t)?.0;
        let du2 = self.table.eval(3, t)?.0;
        let l = u1 + c * u2;
        let value = (u1 * du2 - u2 * du1) / (l * l);
        if !value.is_finite() {
            return Err(ContactError::RiccatiPole { t });
        }
        Ok(value)
    }

    pub fn riccati(&self, c: f64, t: f64) -> Result<f64> {
        let (l, dl) = self.lambda(c, t)?;
        let value = dl / l;
        if !value.is_finite() || value.abs() > RICCATI_BLOWUP {
            return Err(ContactError::RiccatiPole { t });
        }
        Ok(value)
    }
}
