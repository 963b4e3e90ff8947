//! Explicit Runge-Kutta machinery shared by every flow in the crate.
//!
//! Two integrators are provided: classical fixed-step RK4 and the
//! Dormand-Prince 5(4) embedded pair with PI step-size control. Both land
//! exactly on the requested output times.

use crate::error::{ContactError, Result};

/// Tolerances and limits for the adaptive pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Upper bound on any single step; `None` leaves it unbounded.
    pub max_step: Option<f64>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, max_steps: 1_000_000, max_step: None }
    }
}

impl AdaptiveOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }
}

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dim = y.len();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    rhs(t, y, &mut k1)?;
    axpy_into(&mut tmp, y, 0.5 * h, &k1);
    rhs(t + 0.5 * h, &tmp, &mut k2)?;
    axpy_into(&mut tmp, y, 0.5 * h, &k2);
    rhs(t + 0.5 * h, &tmp, &mut k3)?;
    axpy_into(&mut tmp, y, h, &k3);
    rhs(t + h, &tmp, &mut k4)?;

    let out: Vec<f64> = (0..dim)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ContactError::InvalidState(format!("non-finite RK4 stage result at t = {}", t + h)));
    }
    Ok(out)
}

fn axpy_into(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

fn check_outputs(t0: f64, outputs: &[f64]) -> Result<()> {
    let mut prev = t0;
    for &t in outputs {
        if !t.is_finite() || t < prev {
            return Err(ContactError::InvalidState(format!(
                "output times must be finite and non-decreasing from t0 = {t0}; got {t} after {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Fixed-step RK4 from `t0`, truncating steps to land on each output time.
pub fn solve_fixed_rk4<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    h: f64,
    max_steps: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(ContactError::InvalidParameter { name: "step", value: h, reason: "step must be positive" });
    }
    check_outputs(t0, outputs)?;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(outputs.len());
    for &target in outputs {
        while target - t > 1e-12 * h {
            if steps >= max_steps {
                return Err(ContactError::MaxStepsExceeded { max_steps, t });
            }
            let step = h.min(target - t);
            y = rk4_step(&mut rhs, t, &y, step)?;
            // Avoid drift of the clock by snapping to the target on the last step.
            t = if step < h { target } else { t + step };
            if (target - t).abs() <= 1e-12 * h {
                t = target;
            }
            steps += 1;
        }
        out.push(y.clone());
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], opts: &AdaptiveOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let scale = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Integrates with the Dormand-Prince pair, returning the state at each output time.
///
/// `guard` runs after every accepted step and may abort the integration
/// (collapse and blow-up detection).
pub fn solve_adaptive<F, G>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &AdaptiveOptions,
    mut guard: G,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(ContactError::InvalidParameter {
            name: "tolerance",
            value: opts.rel_tol.min(opts.abs_tol),
            reason: "tolerances must be positive",
        });
    }
    if opts.max_steps == 0 {
        return Err(ContactError::InvalidParameter { name: "max_steps", value: 0.0, reason: "must be positive" });
    }
    check_outputs(t0, outputs)?;
    let dim = y0.len();
    let mut out = Vec::with_capacity(outputs.len());
    let Some(&t_final) = outputs.last() else {
        return Ok(out);
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    rhs(t, &y, &mut k[0])?;

    let span = t_final - t0;
    let mut h = initial_step(&mut rhs, t, &y, &k[0], opts, span)?;
    let mut err_old = 1e-4f64;
    let mut steps = 0usize;
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    for &target in outputs {
        while target > t {
            if steps >= opts.max_steps {
                return Err(ContactError::MaxStepsExceeded { max_steps: opts.max_steps, t });
            }
            if let Some(cap) = opts.max_step {
                h = h.min(cap);
            }
            let natural = h;
            let landing = t + h >= target - 1e-13 * target.abs().max(1.0);
            let step = if landing { target - t } else { h };
            if step <= 1e-15 * t.abs().max(1.0) && !landing {
                return Err(ContactError::StepSizeUnderflow { t, h: step });
            }

            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
                let (_, tail) = k.split_at_mut(s);
                rhs(t + C[s] * step, &stage, &mut tail[0])?;
            }
            for i in 0..dim {
                err[i] = step * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
            }
            let finite = y_new.iter().all(|v| v.is_finite());
            let en = if finite { error_norm(&err, &y, &y_new, opts) } else { f64::INFINITY };
            steps += 1;

            if en <= 1.0 {
                let fac = (SAFETY * en.max(1e-10).powf(-(0.2 - 0.75 * BETA)) * err_old.powf(BETA)).clamp(FAC_MIN, FAC_MAX);
                err_old = en.max(1e-4);
                t = if landing { target } else { t + step };
                y.copy_from_slice(&y_new);
                let last = k.pop().expect("seven stages");
                k.insert(0, last);
                guard(t, &y)?;
                let proposal = step * fac;
                h = if landing { proposal.max(natural) } else { proposal };
            } else {
                let fac = if en.is_finite() { (SAFETY * en.powf(-0.2)).max(FAC_MIN) } else { FAC_MIN };
                h = step * fac;
                if h <= 1e-15 * t.abs().max(1.0) {
                    return Err(ContactError::StepSizeUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &AdaptiveOptions, span: f64) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if span <= 0.0 {
        return Ok(1e-6);
    }
    let scale: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span).max(1e-12 * span))
}

/// Samples of a smooth vector function with derivatives, interpolated by cubic Hermite splines.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteTable {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
}

impl HermiteTable {
    /// `values[i]` and `derivatives[i]` are the samples at `times[i]`.
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, derivatives: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || values.len() != times.len() || derivatives.len() != times.len() {
            return Err(ContactError::TooFewSamples { needed: 2, got: times.len().min(values.len()) });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ContactError::InvalidState("interpolation grid must be strictly increasing".into()));
        }
        Ok(Self { times, values, derivatives })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    pub fn sample(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.values[i], &self.derivatives[i])
    }

    /// Interpolated value and derivative of `component` at `t`.
    pub fn eval(&self, component: usize, t: f64) -> Result<(f64, f64)> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-12 * (end - start).abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(ContactError::OutOfRange { t, start, end });
        }
        let t = t.clamp(start, end);
        let idx = self.times.partition_point(|&x| x <= t).clamp(1, self.times.len() - 1) - 1;
        let (t0, t1) = (self.times[idx], self.times[idx + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.values[idx][component], self.values[idx + 1][component]);
        let (d0, d1) = (self.derivatives[idx][component] * h, self.derivatives[idx + 1][component] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1;
        let slope = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * d1)
            / h;
        Ok((value, slope))
    }
}
